use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{
    avgpool2x2_backward, avgpool2x2_forward, dropout_mask, maxpool2x2_backward, maxpool2x2_forward,
    relu_backward_in_place, relu_in_place, Conv2d, Dense,
};
use crate::cost::{cost_report, CostReport, LayerDesc};
use crate::perceptron::{self, HtBackend, HtPerceptronParams, LayerCache};
use crate::{Error, Real, Result, SeedRng, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Two 3x3 convolutions, pooling, two dense layers.
    ToyCnn,
    /// Same network with the second convolution replaced by a `paths`-path HT-perceptron.
    ToyHtCnn { paths: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Max,
    Average,
}

/// Network description. The MNIST defaults are 32x32 single-channel inputs,
/// 32 feature maps, a 128-unit hidden layer and 10 classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub image_size: usize,
    pub in_channels: usize,
    pub channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub pooling: Pooling,
    /// Dropout after the second feature layer and after the hidden dense layer.
    pub dropout: f64,
}

impl ModelSpec {
    pub fn toy_cnn() -> Self {
        Self {
            architecture: Architecture::ToyCnn,
            image_size: 32,
            in_channels: 1,
            channels: 32,
            hidden: 128,
            classes: 10,
            pooling: Pooling::Max,
            dropout: 0.2,
        }
    }

    pub fn toy_ht_cnn(paths: usize) -> Self {
        Self {
            architecture: Architecture::ToyHtCnn { paths },
            ..Self::toy_cnn()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.image_size % 2 != 0 {
            return Err(Error::Config(format!(
                "image size {} must be even",
                self.image_size
            )));
        }
        if let Architecture::ToyHtCnn { paths } = self.architecture {
            if paths == 0 {
                return Err(Error::Config(
                    "an HT-perceptron needs at least one path".into(),
                ));
            }
            if !self.image_size.is_power_of_two() {
                return Err(Error::NotPowerOfTwo(self.image_size));
            }
        }
        if self.in_channels == 0 || self.channels == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn flat_features(&self) -> usize {
        self.channels * (self.image_size / 2) * (self.image_size / 2)
    }

    /// Layer shapes in execution order, for cost accounting.
    pub fn layers(&self) -> Vec<(&'static str, LayerDesc)> {
        let size = self.image_size as u64;
        let c = self.channels as u64;
        let middle = match self.architecture {
            Architecture::ToyCnn => (
                "conv2",
                LayerDesc::Conv2d {
                    kernel: 3,
                    in_channels: c,
                    out_channels: c,
                    size,
                    bias: true,
                },
            ),
            Architecture::ToyHtCnn { paths } => (
                "ht",
                LayerDesc::HtPerceptron {
                    paths: paths as u64,
                    in_channels: c,
                    out_channels: c,
                    size,
                },
            ),
        };
        vec![
            (
                "conv1",
                LayerDesc::Conv2d {
                    kernel: 3,
                    in_channels: self.in_channels as u64,
                    out_channels: c,
                    size,
                    bias: true,
                },
            ),
            middle,
            ("pool", LayerDesc::Free),
            (
                "fc1",
                LayerDesc::Dense {
                    fan_in: self.flat_features() as u64,
                    fan_out: self.hidden as u64,
                    bias: true,
                },
            ),
            (
                "fc2",
                LayerDesc::Dense {
                    fan_in: self.hidden as u64,
                    fan_out: self.classes as u64,
                    bias: true,
                },
            ),
        ]
    }

    pub fn cost(&self) -> CostReport {
        cost_report(self.layers())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Middle<T> {
    Conv(Conv2d<T>),
    Ht(HtPerceptronParams<T>),
}

/// Read-only view of one named parameter tensor.
#[derive(Debug)]
pub struct ParamRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
    pub non_negative: bool,
}

/// Mutable view of one named parameter tensor.
#[derive(Debug)]
pub struct ParamMut<'a, T> {
    pub name: String,
    pub data: &'a mut [T],
    pub non_negative: bool,
}

/// How a forward pass runs.
#[derive(Debug)]
pub enum Mode<'a> {
    /// Dropout off; the HT layer (if any) uses the given backend.
    Eval(HtBackend),
    /// Dropout on, driven by the generator; classical transforms.
    Train(&'a mut SeedRng),
}

#[derive(Debug, Clone)]
enum MiddleCache<T> {
    Conv,
    Ht(LayerCache<T>),
}

/// Everything [`Model::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    input: Tensor4<T>,
    first: Tensor4<T>,
    middle: MiddleCache<T>,
    second: Tensor4<T>,
    second_mask: Option<Vec<T>>,
    pool_input_dims: [usize; 4],
    argmax: Vec<u32>,
    flat: Vec<T>,
    hidden: Vec<T>,
    hidden_mask: Option<Vec<T>>,
    hidden_dropped: Vec<T>,
}

/// The toy CNN or its HT-perceptron variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    conv1: Conv2d<T>,
    middle: Middle<T>,
    fc1: Dense<T>,
    fc2: Dense<T>,
}

impl<T: Real> Model<T> {
    pub fn new(spec: ModelSpec, rng: &mut SeedRng) -> Result<Self> {
        spec.validate()?;
        let c = spec.channels;
        let conv1 = Conv2d::new(spec.in_channels, c, 3, rng);
        let middle = match spec.architecture {
            Architecture::ToyCnn => Middle::Conv(Conv2d::new(c, c, 3, rng)),
            Architecture::ToyHtCnn { paths } => Middle::Ht(HtPerceptronParams::init(
                paths,
                spec.image_size,
                spec.image_size,
                c,
                c,
                rng,
            )),
        };
        let fc1 = Dense::new(spec.flat_features(), spec.hidden, rng);
        let fc2 = Dense::new(spec.hidden, spec.classes, rng);
        Ok(Self {
            spec,
            conv1,
            middle,
            fc1,
            fc2,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// The HT-perceptron parameters, if this is the HT variant.
    pub fn ht_params(&self) -> Option<&HtPerceptronParams<T>> {
        match &self.middle {
            Middle::Ht(p) => Some(p),
            Middle::Conv(_) => None,
        }
    }

    /// Named parameter tensors in a fixed order shared by [`Self::parameters_mut`],
    /// [`Self::backward`] and persisted checkpoints.
    pub fn parameters(&self) -> Vec<ParamRef<'_, T>> {
        let c = self.spec.channels;
        let mut refs = Vec::new();
        fn push<'a, T>(
            refs: &mut Vec<ParamRef<'a, T>>,
            name: String,
            shape: Vec<usize>,
            data: &'a [T],
            non_negative: bool,
        ) {
            refs.push(ParamRef {
                name,
                shape,
                data,
                non_negative,
            });
        }
        let mut add =
            |name, shape, data, non_negative| push(&mut refs, name, shape, data, non_negative);
        add(
            "conv1.weight".into(),
            vec![c, self.spec.in_channels, 3, 3],
            &self.conv1.weight,
            false,
        );
        add("conv1.bias".into(), vec![c], &self.conv1.bias, false);
        match &self.middle {
            Middle::Conv(conv) => {
                add("conv2.weight".into(), vec![c, c, 3, 3], &conv.weight, false);
                add("conv2.bias".into(), vec![c], &conv.bias, false);
            }
            Middle::Ht(p) => {
                let s = self.spec.image_size;
                for i in 0..p.paths() {
                    add(
                        format!("ht.path{i}.scale"),
                        vec![s, s],
                        p.scales[i].as_slice(),
                        false,
                    );
                    add(
                        format!("ht.path{i}.threshold"),
                        vec![s, s],
                        p.thresholds[i].as_slice(),
                        true,
                    );
                    add(
                        format!("ht.path{i}.kernel"),
                        vec![c, c, 1, 1],
                        p.kernels[i].as_slice(),
                        false,
                    );
                }
            }
        }
        add(
            "fc1.weight".into(),
            vec![self.spec.hidden, self.spec.flat_features()],
            &self.fc1.weight,
            false,
        );
        add(
            "fc1.bias".into(),
            vec![self.spec.hidden],
            &self.fc1.bias,
            false,
        );
        add(
            "fc2.weight".into(),
            vec![self.spec.classes, self.spec.hidden],
            &self.fc2.weight,
            false,
        );
        add(
            "fc2.bias".into(),
            vec![self.spec.classes],
            &self.fc2.bias,
            false,
        );
        refs
    }

    pub fn parameters_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        fn push<'a, T>(
            out: &mut Vec<ParamMut<'a, T>>,
            name: String,
            data: &'a mut [T],
            non_negative: bool,
        ) {
            out.push(ParamMut {
                name,
                data,
                non_negative,
            });
        }
        let mut add = |name, data, non_negative| push(&mut out, name, data, non_negative);
        add("conv1.weight".into(), &mut self.conv1.weight, false);
        add("conv1.bias".into(), &mut self.conv1.bias, false);
        match &mut self.middle {
            Middle::Conv(conv) => {
                add("conv2.weight".into(), &mut conv.weight, false);
                add("conv2.bias".into(), &mut conv.bias, false);
            }
            Middle::Ht(p) => {
                let HtPerceptronParams {
                    scales,
                    thresholds,
                    kernels,
                } = p;
                for (i, ((a, t), v)) in scales
                    .iter_mut()
                    .zip(thresholds.iter_mut())
                    .zip(kernels.iter_mut())
                    .enumerate()
                {
                    add(format!("ht.path{i}.scale"), a.as_mut_slice(), false);
                    add(format!("ht.path{i}.threshold"), t.as_mut_slice(), true);
                    add(format!("ht.path{i}.kernel"), v.as_mut_slice(), false);
                }
            }
        }
        add("fc1.weight".into(), &mut self.fc1.weight, false);
        add("fc1.bias".into(), &mut self.fc1.bias, false);
        add("fc2.weight".into(), &mut self.fc2.weight, false);
        add("fc2.bias".into(), &mut self.fc2.bias, false);
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.data.len()).sum()
    }

    /// Overwrites every parameter from `(name, values)` pairs given in
    /// [`Self::parameters`] order.
    pub fn load_parameters(&mut self, values: &[(String, Vec<T>)]) -> Result<()> {
        let slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(Error::Shape(format!(
                "model has {} tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, (name, data)) in slots.into_iter().zip(values) {
            if &slot.name != name || slot.data.len() != data.len() {
                return Err(Error::Shape(format!(
                    "expected {} ({} values), got {name} ({} values)",
                    slot.name,
                    slot.data.len(),
                    data.len()
                )));
            }
            slot.data.copy_from_slice(data);
        }
        if let Middle::Ht(p) = &self.middle {
            p.validate()?;
        }
        Ok(())
    }

    /// Runs the network on `(batch, in_channels, size, size)` inputs and returns
    /// `batch x classes` logits.
    pub fn forward(&self, x: &Tensor4<T>, mode: Mode<'_>) -> Result<(Vec<T>, ForwardCache<T>)> {
        let s = self.spec.image_size;
        let batch = x.batch();
        x.ensure_dims([batch, self.spec.in_channels, s, s], "model input")?;
        let (backend, mut rng) = match mode {
            Mode::Eval(backend) => (backend, None),
            Mode::Train(rng) => (HtBackend::Classical, Some(rng)),
        };
        let dropout = |len: usize, rng: &mut Option<&mut SeedRng>| -> Result<Option<Vec<T>>> {
            match rng {
                Some(r) if self.spec.dropout > 0.0 => {
                    Ok(Some(dropout_mask(len, self.spec.dropout, *r)?))
                }
                _ => Ok(None),
            }
        };

        let mut first = self.conv1.forward(x)?;
        relu_in_place(first.as_mut_slice());

        let (mut second, middle) = match &self.middle {
            Middle::Conv(conv) => (conv.forward(&first)?, MiddleCache::Conv),
            Middle::Ht(p) => {
                let (y, cache) = perceptron::forward(&first, p, backend)?;
                (y, MiddleCache::Ht(cache))
            }
        };
        relu_in_place(second.as_mut_slice());

        let second_mask = dropout(second.len(), &mut rng)?;
        let pool_input = match &second_mask {
            Some(mask) => {
                let mut dropped = second.clone();
                dropped
                    .as_mut_slice()
                    .iter_mut()
                    .zip(mask)
                    .for_each(|(v, &m)| *v *= m);
                dropped
            }
            None => second.clone(),
        };
        let (pooled, argmax) = match self.spec.pooling {
            Pooling::Max => maxpool2x2_forward(&pool_input)?,
            Pooling::Average => (avgpool2x2_forward(&pool_input)?, Vec::new()),
        };
        let flat = pooled.into_vec();

        let mut hidden = self.fc1.forward(&flat, batch)?;
        relu_in_place(&mut hidden);
        let hidden_mask = dropout(hidden.len(), &mut rng)?;
        let hidden_dropped = match &hidden_mask {
            Some(mask) => hidden.iter().zip(mask).map(|(&v, &m)| v * m).collect(),
            None => hidden.clone(),
        };
        let logits = self.fc2.forward(&hidden_dropped, batch)?;

        let cache = ForwardCache {
            batch,
            input: x.clone(),
            first,
            middle,
            second,
            second_mask,
            pool_input_dims: pool_input.dims(),
            argmax,
            flat,
            hidden,
            hidden_mask,
            hidden_dropped,
        };
        Ok((logits, cache))
    }

    /// Gradients of the loss for every parameter, in [`Self::parameters`] order.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &[T]) -> Result<Vec<Vec<T>>> {
        let batch = cache.batch;
        if grad_logits.len() != batch * self.spec.classes {
            return Err(Error::Cache(
                "logit gradient does not match the cached batch".into(),
            ));
        }
        let fc2 = self
            .fc2
            .backward(&cache.hidden_dropped, grad_logits, batch)?;
        let mut grad_hidden = fc2.input;
        if let Some(mask) = &cache.hidden_mask {
            grad_hidden.iter_mut().zip(mask).for_each(|(g, &m)| *g *= m);
        }
        relu_backward_in_place(&mut grad_hidden, &cache.hidden);
        let fc1 = self.fc1.backward(&cache.flat, &grad_hidden, batch)?;

        let [b, c, h, w] = cache.pool_input_dims;
        let grad_pooled = Tensor4::from_vec([b, c, h / 2, w / 2], fc1.input)?;
        let mut grad_second = match self.spec.pooling {
            Pooling::Max => {
                maxpool2x2_backward(&grad_pooled, &cache.argmax, cache.pool_input_dims)?
            }
            Pooling::Average => avgpool2x2_backward(&grad_pooled, cache.pool_input_dims)?,
        };
        if let Some(mask) = &cache.second_mask {
            grad_second
                .as_mut_slice()
                .iter_mut()
                .zip(mask)
                .for_each(|(g, &m)| *g *= m);
        }
        relu_backward_in_place(grad_second.as_mut_slice(), cache.second.as_slice());

        let mut grads = Vec::new();
        let mut grad_first = match (&self.middle, &cache.middle) {
            (Middle::Conv(conv), MiddleCache::Conv) => {
                let g = conv.backward(&cache.first, &grad_second, true)?;
                grads.push(g.weight);
                grads.push(g.bias);
                g.input.expect("input gradient requested")
            }
            (Middle::Ht(p), MiddleCache::Ht(layer_cache)) => {
                let g = perceptron::backward(p, layer_cache, &grad_second)?;
                for ((a, t), v) in g.scales.into_iter().zip(g.thresholds).zip(g.kernels) {
                    grads.push(a.into_vec());
                    grads.push(t.into_vec());
                    grads.push(v.into_vec());
                }
                g.input
            }
            _ => {
                return Err(Error::Cache(
                    "cache was produced by a different architecture".into(),
                ))
            }
        };
        relu_backward_in_place(grad_first.as_mut_slice(), cache.first.as_slice());
        let conv1 = self.conv1.backward(&cache.input, &grad_first, false)?;

        let mut ordered = Vec::with_capacity(grads.len() + 6);
        ordered.push(conv1.weight);
        ordered.push(conv1.bias);
        ordered.extend(grads);
        ordered.push(fc1.weight);
        ordered.push(fc1.bias);
        ordered.push(fc2.weight);
        ordered.push(fc2.bias);
        Ok(ordered)
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, x: &Tensor4<T>, backend: HtBackend) -> Result<Vec<T>> {
        Ok(self.forward(x, Mode::Eval(backend))?.0)
    }

    /// Top-1 class per batch item (lowest index wins ties).
    pub fn predict(&self, x: &Tensor4<T>, backend: HtBackend) -> Result<Vec<usize>> {
        let logits = self.logits(x, backend)?;
        Ok(logits
            .chunks_exact(self.spec.classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(0, |best, (k, &v)| if v > row[best] { k } else { best })
            })
            .collect())
    }
}
