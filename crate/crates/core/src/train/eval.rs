use crate::data::Sample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::fit::predicted_classes;
use crate::train::metrics::ConfusionMatrix;
use crate::train::model::ModelGraph;

/// Inference-mode predictions over `test`: the confusion matrix (argmax,
/// ties to the lowest class id) and the `[n, C]` probability matrix.
pub fn evaluate<T: Scalar>(model: &mut ModelGraph<T>, test: &[Sample<T>]) -> Result<(ConfusionMatrix, Tensor<T>)> {
    if test.is_empty() {
        return Err(Error::Data("cannot evaluate an empty test set".into()));
    }
    let c = model.num_classes;
    let mut cm = ConfusionMatrix::new(c);
    let mut scores = Vec::with_capacity(test.len() * c);
    for chunk in test.chunks(64) {
        let refs: Vec<&Sample<T>> = chunk.iter().collect();
        let probs = model.predict_proba(&refs)?;
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        cm.merge(&ConfusionMatrix::from_predictions(&labels, &predicted_classes(&probs), c)?);
        scores.extend_from_slice(probs.data());
    }
    Ok((cm, Tensor::new(vec![test.len(), c], scores)?))
}
