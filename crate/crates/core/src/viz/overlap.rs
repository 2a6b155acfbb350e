use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Intersection-over-union of the top-`q` mass regions of two maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapStat {
    pub iou: f64,
    pub q: f64,
}

/// Smallest set of cells holding at least `q` of the total mass, chosen
/// greedily by descending value with row-major tie order. Sorted ascending.
pub fn topq_cells<T: Scalar>(map: &Tensor<T>, q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("q must be in (0, 1), got {q}")));
    }
    let values: Vec<f64> = map.data().iter().map(|v| v.to_f64_lossy()).collect();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Contract("overlap maps must be finite and non-negative".into()));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::Contract("overlap map has no positive mass".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut acc = 0.0;
    let mut cells = Vec::new();
    for i in order {
        cells.push(i);
        acc += values[i];
        if acc >= q * total {
            break;
        }
    }
    cells.sort_unstable();
    Ok(cells)
}

pub fn overlap_topq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, q: f64) -> Result<OverlapStat> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(Error::Shape(format!("overlap needs equal [h,w] maps, got {:?} and {:?}", a.shape(), b.shape())));
    }
    let sa = topq_cells(a, q)?;
    let sb = topq_cells(b, q)?;
    let inter = sa.iter().filter(|i| sb.binary_search(i).is_ok()).count();
    let union = sa.len() + sb.len() - inter;
    Ok(OverlapStat { iou: inter as f64 / union as f64, q })
}
