use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RebalanceTarget {
    Count(usize),
    /// Rounded mean class count.
    Mean,
    Max,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebalancePolicy {
    pub target: RebalanceTarget,
    pub seed: u64,
}

impl RebalancePolicy {
    pub fn resolve(&self, counts: &[usize]) -> Result<usize> {
        let n = match self.target {
            RebalanceTarget::Count(n) => n,
            RebalanceTarget::Mean => {
                let total: usize = counts.iter().sum();
                (total as f64 / counts.len().max(1) as f64).round() as usize
            }
            RebalanceTarget::Max => counts.iter().copied().max().unwrap_or(0),
            RebalanceTarget::Min => counts.iter().copied().min().unwrap_or(0),
        };
        if n == 0 {
            return Err(Error::Parameter("rebalance target resolves to zero".into()));
        }
        Ok(n)
    }
}

fn class_members(labels: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members.get_mut(l).ok_or_else(|| Error::Data(format!("label {l} outside {classes} classes")))?.push(i);
    }
    Ok(members)
}

/// Indices into `labels` giving every class exactly the resolved target count.
///
/// Larger classes are subsampled without replacement; smaller classes keep
/// every member plus uniform draws with replacement. The result is shuffled.
pub fn rebalance_indices(labels: &[usize], classes: usize, policy: &RebalancePolicy) -> Result<Vec<usize>> {
    let members = class_members(labels, classes)?;
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("class {c} has no samples to rebalance")));
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let target = policy.resolve(&counts)?;
    let mut rng = SeededRng::new(policy.seed);
    let mut out = Vec::with_capacity(target * classes);
    for mut idx in members {
        if idx.len() >= target {
            idx.shuffle(&mut rng);
            out.extend_from_slice(&idx[..target]);
        } else {
            out.extend_from_slice(&idx);
            for _ in idx.len()..target {
                out.push(idx[rng.below(idx.len())]);
            }
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// [`rebalance_indices`] over samples whose labels are `0..C` with `C` the
/// largest label plus one.
pub fn rebalance<T: Clone>(samples: &[Sample<T>], policy: &RebalancePolicy) -> Result<Vec<Sample<T>>> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let idx = rebalance_indices(&labels, classes, policy)?;
    Ok(idx.into_iter().map(|i| samples[i].clone()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { test_fraction: 0.15, seed: 0, stratified: true }
    }
}

/// `ceil(fraction * n)`, ignoring rounding noise in the product.
fn test_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Train and test index sets, each in ascending order. With stratification
/// every class contributes `ceil(fraction * n_c)` members to the test set.
pub fn split_indices(labels: &[usize], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::Parameter(format!("test fraction must be in (0,1), got {}", spec.test_fraction)));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let groups = if spec.stratified {
        let members = class_members(labels, classes)?;
        if let Some((c, _)) = members.iter().enumerate().find(|(_, m)| m.len() == 1) {
            return Err(Error::Data(format!("class {c} has a single sample; cannot stratify")));
        }
        members
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut rng = SeededRng::new(spec.seed);
    let mut is_test = vec![false; labels.len()];
    for mut g in groups {
        let k = test_count(spec.test_fraction, g.len());
        g.shuffle(&mut rng);
        for &i in &g[..k] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| is_test[i]);
    Ok((train, test))
}

/// Train and test samples.
pub type Split<T> = (Vec<Sample<T>>, Vec<Sample<T>>);

pub fn stratified_split<T: Clone>(samples: &[Sample<T>], spec: &SplitSpec) -> Result<Split<T>> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let (train, test) = split_indices(&labels, spec)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| samples[i].clone()).collect();
    Ok((pick(train), pick(test)))
}
