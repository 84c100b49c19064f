use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv_backward, conv_forward, dense_backward, dense_forward, maxpool_forward, Activation,
    ConvDims, LayerSpec, Padding,
};
use crate::dataset::Normalizer;
use crate::error::{Error, Result};

/// Activation shape after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `(len, channels)` sequence.
    Seq { len: usize, ch: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Seq { len, ch } => len * ch,
            Shape::Flat(n) => n,
        }
    }
}

/// Layer stack with its input geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_len: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

/// Resolved per-layer geometry and parameter offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerInfo {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub weights: usize,
    pub biases: usize,
    pub offset: usize,
}

impl LayerInfo {
    pub fn params(&self) -> usize {
        self.weights + self.biases
    }
}

impl Architecture {
    /// Infers every layer's shapes and parameter counts.
    pub fn resolve(&self) -> Result<Vec<LayerInfo>> {
        if self.input_len == 0 || self.input_channels == 0 {
            return Err(Error::Shape("empty model input".into()));
        }
        let mut shape = Shape::Seq {
            len: self.input_len,
            ch: self.input_channels,
        };
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let (output, weights, biases) = match (*spec, shape) {
                (
                    LayerSpec::Conv1d {
                        filters,
                        kernel_size,
                        padding,
                        ..
                    },
                    Shape::Seq { len, ch },
                ) => {
                    if filters == 0 || kernel_size == 0 {
                        return Err(Error::Shape(format!("layer {i}: empty convolution")));
                    }
                    let (_, len_out) = padding.geometry(len, kernel_size)?;
                    (
                        Shape::Seq {
                            len: len_out,
                            ch: filters,
                        },
                        kernel_size * ch * filters,
                        filters,
                    )
                }
                (LayerSpec::MaxPool1d { pool_size }, Shape::Seq { len, ch }) => {
                    if pool_size == 0 || len < pool_size {
                        return Err(Error::Shape(format!(
                            "layer {i}: pool {pool_size} does not fit length {len}"
                        )));
                    }
                    (Shape::Seq { len: len / pool_size, ch }, 0, 0)
                }
                (LayerSpec::Flatten, s) => (Shape::Flat(s.size()), 0, 0),
                (LayerSpec::Dense { units, .. }, Shape::Flat(n)) => {
                    if units == 0 {
                        return Err(Error::Shape(format!("layer {i}: dense layer with no units")));
                    }
                    (Shape::Flat(units), n * units, units)
                }
                (spec, s) => {
                    return Err(Error::Shape(format!(
                        "layer {i}: {spec:?} cannot follow shape {s:?}"
                    )))
                }
            };
            out.push(LayerInfo {
                spec: *spec,
                input: shape,
                output,
                weights,
                biases,
                offset,
            });
            offset += weights + biases;
            shape = output;
        }
        Ok(out)
    }

    pub fn param_counts(&self) -> Result<Vec<usize>> {
        Ok(self.resolve()?.iter().map(LayerInfo::params).collect())
    }

    pub fn total_params(&self) -> Result<usize> {
        Ok(self.param_counts()?.iter().sum())
    }

    pub fn input_size(&self) -> usize {
        self.input_len * self.input_channels
    }

    pub fn output_size(&self) -> Result<usize> {
        Ok(self
            .resolve()?
            .last()
            .map_or(self.input_size(), |l| l.output.size()))
    }
}

/// What the network output means: a flattened trajectory on `times` for
/// `n_sites`, with inputs scaled by `normalizer`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMeta {
    pub n_sites: usize,
    pub times: Vec<f64>,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub meta: Option<OutputMeta>,
    layers: Vec<LayerInfo>,
    params: Option<Vec<f64>>,
}

/// Per-layer activations recorded by [`Model::forward_cached`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

/// Conv1d(80,3,valid) -> Conv1d(110,3,same) -> Conv1d(80,3,same) -> MaxPool(2)
/// -> Flatten -> Dense(32) -> Dense(128) -> Dense(output_length, linear),
/// ReLU everywhere else, on a `(4, 1)` input.
pub fn paper_architecture(output_length: usize) -> Result<Model> {
    if output_length == 0 {
        return Err(Error::Invalid("output length must be positive".into()));
    }
    let relu = Activation::Relu;
    Model::new(Architecture {
        input_len: 4,
        input_channels: 1,
        layers: vec![
            LayerSpec::Conv1d {
                filters: 80,
                kernel_size: 3,
                padding: Padding::Valid,
                activation: relu,
            },
            LayerSpec::Conv1d {
                filters: 110,
                kernel_size: 3,
                padding: Padding::Same,
                activation: relu,
            },
            LayerSpec::Conv1d {
                filters: 80,
                kernel_size: 3,
                padding: Padding::Same,
                activation: relu,
            },
            LayerSpec::MaxPool1d { pool_size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 32,
                activation: relu,
            },
            LayerSpec::Dense {
                units: 128,
                activation: relu,
            },
            LayerSpec::Dense {
                units: output_length,
                activation: Activation::Linear,
            },
        ],
    })
}

impl Model {
    /// A model with unallocated weights.
    pub fn new(arch: Architecture) -> Result<Self> {
        let layers = arch.resolve()?;
        Ok(Model {
            arch,
            meta: None,
            layers,
            params: None,
        })
    }

    pub fn with_meta(mut self, meta: OutputMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LayerInfo::params).sum()
    }

    pub fn output_size(&self) -> usize {
        self.layers
            .last()
            .map_or(self.arch.input_size(), |l| l.output.size())
    }

    pub fn is_initialized(&self) -> bool {
        self.params.is_some()
    }

    /// Uniform Glorot initialization, zero biases.
    pub fn init_glorot(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.n_params()];
        for l in &self.layers {
            let (fan_in, fan_out) = match (l.spec, l.input, l.output) {
                (LayerSpec::Conv1d { kernel_size, .. }, Shape::Seq { ch: ci, .. }, Shape::Seq { ch: co, .. }) => {
                    (kernel_size * ci, kernel_size * co)
                }
                (LayerSpec::Dense { .. }, i, o) => (i.size(), o.size()),
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[l.offset..l.offset + l.weights] {
                *w = rng.random_range(-limit..limit);
            }
        }
        self.params = Some(params);
    }

    pub fn init_zeros(&mut self) {
        self.params = Some(vec![0.0; self.n_params()]);
    }

    pub fn params(&self) -> Result<&[f64]> {
        self.params.as_deref().ok_or(Error::Uninitialized)
    }

    pub fn params_mut(&mut self) -> Result<&mut [f64]> {
        self.params.as_deref_mut().ok_or(Error::Uninitialized)
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.n_params()
            )));
        }
        self.params = Some(params);
        Ok(())
    }

    /// One forward pass; the whole output vector is produced at once.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.acts.pop().unwrap_or_default())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        let params = self.params()?;
        if input.len() != self.arch.input_size() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}",
                input.len(),
                self.arch.input_size()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for l in &self.layers {
            let x = acts.last().unwrap();
            let mut y = vec![0.0; l.output.size()];
            let mut arg = Vec::new();
            let w = &params[l.offset..l.offset + l.weights];
            let b = &params[l.offset + l.weights..l.offset + l.params()];
            match l.spec {
                LayerSpec::Conv1d { activation, .. } => {
                    conv_forward(&conv_dims(l), x, w, b, activation, &mut y);
                }
                LayerSpec::MaxPool1d { pool_size } => {
                    let (len, ch) = seq(l.input);
                    arg = vec![0; y.len()];
                    maxpool_forward(len, ch, pool_size, x, &mut y, &mut arg);
                }
                LayerSpec::Flatten => y.copy_from_slice(x),
                LayerSpec::Dense { activation, .. } => {
                    dense_forward(l.input.size(), x, w, b, activation, &mut y);
                }
            }
            acts.push(y);
            argmax.push(arg);
        }
        Ok(ForwardCache { acts, argmax })
    }

    /// Reverse-mode pass accumulating `d loss / d params` into `grad` given
    /// `upstream = d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        let params = self.params()?;
        if cache.acts.len() != self.layers.len() + 1 || cache.argmax.len() != self.layers.len() {
            return Err(Error::MissingCache);
        }
        if upstream.len() != self.output_size() || grad.len() != params.len() {
            return Err(Error::Shape("gradient buffers do not match the model".into()));
        }
        let mut g_out = upstream.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &cache.acts[i];
            let y = &cache.acts[i + 1];
            let need_input = i > 0;
            let mut g_in = vec![0.0; if need_input { l.input.size() } else { 0 }];
            let (gw, rest) = grad[l.offset..l.offset + l.params()].split_at_mut(l.weights);
            let w = &params[l.offset..l.offset + l.weights];
            match l.spec {
                LayerSpec::Conv1d { activation, .. } => {
                    let dpre = scale_by_activation(&g_out, y, activation);
                    conv_backward(
                        &conv_dims(l),
                        x,
                        w,
                        &dpre,
                        gw,
                        rest,
                        need_input.then_some(g_in.as_mut_slice()),
                    );
                }
                LayerSpec::MaxPool1d { .. } => {
                    if need_input {
                        for (k, &src) in cache.argmax[i].iter().enumerate() {
                            g_in[src] += g_out[k];
                        }
                    }
                }
                LayerSpec::Flatten => {
                    if need_input {
                        g_in.copy_from_slice(&g_out);
                    }
                }
                LayerSpec::Dense { activation, .. } => {
                    let dpre = scale_by_activation(&g_out, y, activation);
                    dense_backward(
                        l.input.size(),
                        x,
                        w,
                        &dpre,
                        gw,
                        rest,
                        need_input.then_some(g_in.as_mut_slice()),
                    );
                }
            }
            g_out = g_in;
        }
        Ok(())
    }
}

fn scale_by_activation(g: &[f64], y: &[f64], act: Activation) -> Vec<f64> {
    match act {
        Activation::Linear => g.to_vec(),
        _ => g
            .iter()
            .zip(y)
            .map(|(&gi, &yi)| gi * act.grad_from_output(yi))
            .collect(),
    }
}

fn seq(s: Shape) -> (usize, usize) {
    match s {
        Shape::Seq { len, ch } => (len, ch),
        Shape::Flat(n) => (n, 1),
    }
}

fn conv_dims(l: &LayerInfo) -> ConvDims {
    let (len_in, ch_in) = seq(l.input);
    let (len_out, filters) = seq(l.output);
    let (kernel, padding) = match l.spec {
        LayerSpec::Conv1d {
            kernel_size,
            padding,
            ..
        } => (kernel_size, padding),
        _ => unreachable!("conv_dims on non-conv layer"),
    };
    let (pad_left, _) = padding
        .geometry(len_in, kernel)
        .expect("geometry validated at construction");
    ConvDims {
        len_in,
        ch_in,
        len_out,
        filters,
        kernel,
        pad_left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_parameter_counts() {
        let m = paper_architecture(39_249).unwrap();
        assert_eq!(
            m.arch.param_counts().unwrap(),
            vec![320, 26_510, 26_480, 0, 0, 2_592, 4_224, 5_063_121]
        );
        assert_eq!(m.n_params(), 5_123_247);
        let shapes: Vec<Shape> = m.layers().iter().map(|l| l.output).collect();
        assert_eq!(
            shapes,
            vec![
                Shape::Seq { len: 2, ch: 80 },
                Shape::Seq { len: 2, ch: 110 },
                Shape::Seq { len: 2, ch: 80 },
                Shape::Seq { len: 1, ch: 80 },
                Shape::Flat(80),
                Shape::Flat(32),
                Shape::Flat(128),
                Shape::Flat(39_249),
            ]
        );
        let tiny = paper_architecture(1).unwrap();
        assert_eq!(*tiny.arch.param_counts().unwrap().last().unwrap(), 129);
        assert!(paper_architecture(0).is_err());
    }

    #[test]
    fn forward_requires_weights() {
        let m = paper_architecture(8).unwrap();
        assert!(matches!(m.forward(&[0.0; 4]), Err(Error::Uninitialized)));
    }

    #[test]
    fn zero_model_outputs_zero() {
        let mut m = paper_architecture(39_249).unwrap();
        m.init_zeros();
        let y = m.forward(&[1.0, 0.3, 0.2, 0.9]).unwrap();
        assert_eq!(y.len(), 39_249);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut m = paper_architecture(500).unwrap();
        m.init_glorot(11);
        let a = m.forward(&[0.0, 0.5, 0.25, 0.75]).unwrap();
        let b = m.forward(&[0.0, 0.5, 0.25, 0.75]).unwrap();
        assert_eq!(a, b);
        assert!(m.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn backward_needs_cache_and_zero_upstream_gives_zero() {
        let mut m = paper_architecture(8).unwrap();
        m.init_glorot(5);
        let mut g = vec![0.0; m.n_params()];
        assert!(matches!(
            m.backward(&ForwardCache::default(), &[0.0; 8], &mut g),
            Err(Error::MissingCache)
        ));
        let cache = m.forward_cached(&[1.0, 0.2, 0.4, 0.6]).unwrap();
        m.backward(&cache, &[0.0; 8], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // One hidden ReLU unit with a negative pre-activation.
        let mut m = Model::new(Architecture {
            input_len: 1,
            input_channels: 1,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 1, activation: Activation::Relu },
                LayerSpec::Dense { units: 1, activation: Activation::Linear },
            ],
        })
        .unwrap();
        // [w1, b1, w2, b2]
        m.set_params(vec![1.0, -5.0, 2.0, 0.0]).unwrap();
        let cache = m.forward_cached(&[1.0]).unwrap();
        let mut g = vec![0.0; 4];
        m.backward(&cache, &[1.0], &mut g).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_stacks_rejected() {
        let bad = Architecture {
            input_len: 4,
            input_channels: 1,
            layers: vec![LayerSpec::Dense { units: 3, activation: Activation::Relu }],
        };
        assert!(Model::new(bad).is_err());
        let bad_pool = Architecture {
            input_len: 1,
            input_channels: 1,
            layers: vec![LayerSpec::MaxPool1d { pool_size: 2 }],
        };
        assert!(Model::new(bad_pool).is_err());
    }
}
