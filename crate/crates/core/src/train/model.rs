use serde::{Deserialize, Serialize};

use crate::attention::{sa_integrate, SoftAttentionConfig, SoftAttentionOutput, SoftAttentionState};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::nn::{BatchNormLayer, Conv2dLayer, DenseLayer, DropoutLayer, Mode, Padding};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Layer<T> {
    Conv2d(Conv2dLayer),
    BatchNorm(BatchNormLayer<T>),
    Relu,
    MaxPool,
    Flatten,
    Dense(DenseLayer),
    Dropout(DropoutLayer),
    /// Soft-attention block fed by the preceding feature map, which serves
    /// as both the main branch and the attention input.
    SoftAttention(SoftAttentionState),
}

impl<T> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
            Layer::SoftAttention(_) => "soft_attention",
        }
    }
}

/// Ordered layers of a classifier plus the parameters they reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelGraph<T> {
    /// `[h, w, c]` of one input image.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<Layer<T>>,
    pub params: ParamStore<T>,
}

/// Tape nodes of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Var,
    /// Output of each layer, by layer index.
    pub outputs: Vec<Var>,
    /// Class scores (pre-softmax), `[n, C]`.
    pub logits: Var,
    pub attention: Option<SoftAttentionOutput>,
}

/// Runs `layers` on the batch `x` (`[n, h, w, c]`).
pub fn forward_layers<T: Scalar>(
    layers: &mut [Layer<T>],
    params: &ParamStore<T>,
    tape: &mut Tape<T>,
    x: Var,
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<ForwardTrace> {
    let mut h = x;
    let mut outputs = Vec::with_capacity(layers.len());
    let mut attention = None;
    for layer in layers.iter_mut() {
        h = match layer {
            Layer::Conv2d(c) => c.forward(tape, params, h)?,
            Layer::BatchNorm(bn) => bn.forward(tape, params, h, mode)?,
            Layer::Relu => tape.relu(h),
            Layer::MaxPool => tape.maxpool2d(h)?,
            Layer::Flatten => tape.flatten_batch(h)?,
            Layer::Dense(d) => d.forward(tape, params, h)?,
            Layer::Dropout(d) => d.forward(tape, h, mode, rng)?,
            Layer::SoftAttention(state) => {
                let out = sa_integrate(tape, params, state, h, h, mode, rng)?;
                attention = Some(out.attention);
                out.output
            }
        };
        outputs.push(h);
    }
    Ok(ForwardTrace { input: x, outputs, logits: h, attention })
}

/// Stacks sample images into one `[n, h, w, c]` batch.
pub fn stack_images<T: Scalar>(samples: &[&Sample<T>]) -> Result<Tensor<T>> {
    let first = samples.first().ok_or_else(|| Error::Data("empty batch".into()))?;
    let shape = first.image.shape().to_vec();
    let mut data = Vec::with_capacity(samples.len() * first.image.len());
    for s in samples {
        if s.image.shape() != shape.as_slice() {
            return Err(Error::Shape(format!("batch mixes image shapes {shape:?} and {:?}", s.image.shape())));
        }
        data.extend_from_slice(s.image.data());
    }
    let mut full = vec![samples.len()];
    full.extend(shape);
    Tensor::new(full, data)
}

impl<T: Scalar> ModelGraph<T> {
    pub fn validate(&self) -> Result<()> {
        let sa = self.layers.iter().filter(|l| matches!(l, Layer::SoftAttention(_))).count();
        if sa > 1 {
            return Err(Error::Schema(format!("at most one soft-attention insertion, found {sa}")));
        }
        match self.layers.last() {
            Some(Layer::Dense(d)) if self.params.value(d.weights).shape()[1] == self.num_classes => Ok(()),
            _ => Err(Error::Schema(format!("final layer must be dense with {} outputs", self.num_classes))),
        }
    }

    /// Index of the soft-attention layer, if any.
    pub fn sa_insertion(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, Layer::SoftAttention(_)))
    }

    pub fn sa_config(&self) -> Option<&SoftAttentionConfig> {
        self.layers.iter().find_map(|l| match l {
            Layer::SoftAttention(s) => Some(&s.config),
            _ => None,
        })
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut SeededRng) -> Result<ForwardTrace> {
        forward_layers(&mut self.layers, &self.params, tape, x, mode, rng)
    }

    /// Inference-mode class probabilities `[n, C]` for `samples`.
    pub fn predict_proba(&mut self, samples: &[&Sample<T>]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(stack_images(samples)?);
        let trace = self.forward(&mut tape, x, Mode::Infer, &mut SeededRng::new(0))?;
        let probs = tape.softmax_last(trace.logits)?;
        Ok(tape.value(probs).clone())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_trainable()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Schema(format!("model snapshot: {e}")))?;
        m.validate()?;
        Ok(m)
    }
}

/// Small backbone mirroring the attention insertion pattern:
///
/// `[conv 8, bn, relu, maxpool] -> [conv 16, bn, relu] -> sa block | maxpool -> flatten -> dense C`
///
/// on `input_size x input_size x 3` images. With attention the block does the
/// pooling and doubles the channel count. The convolutions carry no bias since
/// batch normalization follows each one.
pub fn build_mininet_sized<T: Scalar>(
    classes: usize,
    input_size: usize,
    sa: Option<SoftAttentionConfig>,
    rng: &mut SeededRng,
) -> Result<ModelGraph<T>> {
    if classes < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {classes}")));
    }
    if input_size < 4 {
        return Err(Error::Parameter(format!("input size {input_size} too small to pool twice")));
    }
    let mut params = ParamStore::new();
    let mut layers = Vec::new();
    let conv = |p: &mut ParamStore<T>, name: &str, cin, cout, rng: &mut SeededRng| {
        Conv2dLayer::new_unbiased(p, name, (3, 3), cin, cout, Padding::Same, 1, rng)
    };
    layers.push(Layer::Conv2d(conv(&mut params, "conv1", 3, 8, rng)?));
    layers.push(Layer::BatchNorm(BatchNormLayer::new(&mut params, "bn1", 8)?));
    layers.push(Layer::Relu);
    layers.push(Layer::MaxPool);
    layers.push(Layer::Conv2d(conv(&mut params, "conv2", 8, 16, rng)?));
    layers.push(Layer::BatchNorm(BatchNormLayer::new(&mut params, "bn2", 16)?));
    layers.push(Layer::Relu);
    let fmap = input_size / 2;
    let (channels, side) = match sa {
        Some(cfg) => {
            let state = SoftAttentionState::new(&mut params, "sa", 16, (fmap, fmap), cfg, rng)?;
            layers.push(Layer::SoftAttention(state));
            (32, fmap / 2)
        }
        None => {
            layers.push(Layer::MaxPool);
            (16, fmap / 2)
        }
    };
    layers.push(Layer::Flatten);
    layers.push(Layer::Dense(DenseLayer::new(&mut params, "dense", side * side * channels, classes, rng)?));
    let model = ModelGraph { input_shape: [input_size, input_size, 3], num_classes: classes, layers, params };
    model.validate()?;
    Ok(model)
}

/// [`build_mininet_sized`] for 32x32 inputs.
pub fn build_mininet<T: Scalar>(
    classes: usize,
    sa: Option<SoftAttentionConfig>,
    rng: &mut SeededRng,
) -> Result<ModelGraph<T>> {
    build_mininet_sized(classes, 32, sa, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits_shape(model: &mut ModelGraph<f64>, n: usize) -> Vec<usize> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[n, 32, 32, 3]).unwrap());
        let t = model.forward(&mut tape, x, Mode::Infer, &mut SeededRng::new(0)).unwrap();
        tape.shape(t.logits).to_vec()
    }

    #[test]
    fn seven_classes_without_attention() {
        let mut m = build_mininet::<f64>(7, None, &mut SeededRng::new(1)).unwrap();
        assert_eq!(logits_shape(&mut m, 1), vec![1, 7]);
        assert_eq!(m.sa_insertion(), None);
    }

    #[test]
    fn attention_doubles_channels() {
        let cfg = SoftAttentionConfig { k: 4, ..Default::default() };
        let mut m = build_mininet::<f64>(2, Some(cfg), &mut SeededRng::new(1)).unwrap();
        let idx = m.sa_insertion().unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 32, 32, 3]).unwrap());
        let t = m.forward(&mut tape, x, Mode::Infer, &mut SeededRng::new(0)).unwrap();
        assert_eq!(tape.shape(t.outputs[idx]), &[2, 8, 8, 32]);
        assert_eq!(tape.shape(t.logits), &[2, 2]);
        let alpha = t.attention.unwrap().alpha_map(&tape, 1).unwrap();
        assert_eq!(alpha.shape(), &[16, 16]);
    }

    #[test]
    fn parameter_count_is_deterministic() {
        let cfg = SoftAttentionConfig { k: 4, ..Default::default() };
        let a = build_mininet::<f64>(3, Some(cfg.clone()), &mut SeededRng::new(1)).unwrap();
        let b = build_mininet::<f64>(3, Some(cfg), &mut SeededRng::new(2)).unwrap();
        assert_eq!(a.num_parameters(), b.num_parameters());
        // conv1 216, bn1 16, conv2 1152, bn2 32, heads 576, gamma 1, dense 2048*3+3 (convs carry no bias)
        assert_eq!(a.num_parameters(), 216 + 16 + 1152 + 32 + 576 + 1 + 6147);
    }

    #[test]
    fn too_few_classes() {
        assert!(matches!(build_mininet::<f64>(1, None, &mut SeededRng::new(0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn json_round_trip() {
        let cfg = SoftAttentionConfig { k: 2, ..Default::default() };
        let m = build_mininet::<f64>(2, Some(cfg), &mut SeededRng::new(3)).unwrap();
        let back = ModelGraph::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
