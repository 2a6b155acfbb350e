use crate::autodiff::Tape;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{stack_images, Layer, ModelGraph};

/// The last layer before the first flatten, i.e. the final spatial feature map.
pub fn default_gradcam_layer<T>(model: &ModelGraph<T>) -> Option<usize> {
    model.layers.iter().position(|l| matches!(l, Layer::Flatten)).and_then(|i| i.checked_sub(1))
}

/// `relu(sum_c weight_c * features[.., c])` with `weight_c` the spatial mean of
/// `grads[.., c]`. Both inputs are `[h, w, c]`.
pub fn gradcam_map<T: Scalar>(features: &Tensor<T>, grads: &Tensor<T>) -> Result<Tensor<T>> {
    let &[h, w, c] = features.shape() else {
        return Err(Error::Parameter(format!("Grad-CAM needs a spatial feature map, got {:?}", features.shape())));
    };
    if grads.shape() != features.shape() {
        return Err(Error::Shape("gradient and feature shapes differ".into()));
    }
    let mut weights = vec![T::zero(); c];
    for (i, &g) in grads.data().iter().enumerate() {
        weights[i % c] += g;
    }
    let area = T::of_usize(h * w);
    for v in &mut weights {
        *v /= area;
    }
    let data = features
        .data()
        .chunks(c)
        .map(|px| px.iter().zip(&weights).fold(T::zero(), |acc, (&f, &wt)| acc + wt * f).max(T::zero()))
        .collect();
    Tensor::new(vec![h, w], data)
}

/// Grad-CAM of `class` at the output of layer `layer`, in inference mode.
pub fn gradcam<T: Scalar>(
    model: &mut ModelGraph<T>,
    sample: &Sample<T>,
    layer: usize,
    class: usize,
) -> Result<Tensor<T>> {
    if layer >= model.layers.len() {
        return Err(Error::Parameter(format!("layer {layer} out of {} layers", model.layers.len())));
    }
    if class >= model.num_classes {
        return Err(Error::Parameter(format!("class {class} out of {} classes", model.num_classes)));
    }
    let mut tape = Tape::new();
    let x = tape.constant(stack_images(&[sample])?);
    let trace = model.forward(&mut tape, x, Mode::Infer, &mut SeededRng::new(0))?;
    let feat = trace.outputs[layer];
    let shape = tape.shape(feat).to_vec();
    let &[1, h, w, c] = shape.as_slice() else {
        return Err(Error::Parameter(format!(
            "layer {layer} ({}) is not spatial: output {shape:?}",
            model.layers[layer].kind()
        )));
    };
    let score = tape.index(trace.logits, class)?;
    let grads = tape.backward(score)?;
    let features = tape.value(feat).reshape(&[h, w, c])?;
    let g = match grads.get(feat) {
        Some(g) => g.reshape(&[h, w, c])?,
        None => Tensor::zeros(&[h, w, c])?,
    };
    gradcam_map(&features, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_channel_closed_form() {
        // Score = mean of channel 1 => weight 1/(h*w) on that channel only.
        let f = Tensor::new(vec![1, 2, 2], vec![1.0, -3.0, 2.0, 5.0]).unwrap().reshape(&[2, 1, 2]).unwrap();
        let g = Tensor::new(vec![2, 1, 2], vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let m = gradcam_map(&f, &g).unwrap();
        assert_eq!(m.data(), &[0.0, 2.5]);
    }

    #[test]
    fn zero_gradient_gives_zero_map() {
        let f = Tensor::full(&[3, 3, 2], 1.0).unwrap();
        let m = gradcam_map(&f, &Tensor::zeros(&[3, 3, 2]).unwrap()).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }
}
