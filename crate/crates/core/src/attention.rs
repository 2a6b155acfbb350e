//! The soft-attention block.
//!
//! `K` heads convolve the feature tensor `t` into logit maps, each map is
//! softmax-normalized over space, and the maps are summed into a single
//! weighting map `alpha`. The attended features are `gamma * t * alpha`
//! with `alpha` broadcast across channels. [`sa_integrate`] rejoins them with
//! a main branch: both are max-pooled, concatenated along channels, passed
//! through relu and then dropout.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::data::resize_bilinear;
use crate::error::{Error, Result};
use crate::nn::{nhwc, DropoutLayer, Mode};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Spatial extent of each head kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelExtent {
    /// Odd `kh x kw` window.
    Local(usize, usize),
    /// Kernel as large as the incoming feature map.
    FullMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftAttentionConfig {
    /// Number of heads.
    pub k: usize,
    pub extent: KernelExtent,
    pub gamma_init: f64,
    pub dropout: f64,
}

impl Default for SoftAttentionConfig {
    fn default() -> Self {
        Self { k: 16, extent: KernelExtent::Local(3, 3), gamma_init: 0.01, dropout: 0.5 }
    }
}

impl SoftAttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("soft attention needs at least one head".into()));
        }
        if !(self.gamma_init > 0.0) {
            return Err(Error::Parameter(format!("gamma_init must be positive, got {}", self.gamma_init)));
        }
        if let KernelExtent::Local(kh, kw) = self.extent {
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(Error::Parameter(format!("head kernel must be odd, got {kh}x{kw}")));
            }
        }
        DropoutLayer::new(self.dropout)?;
        Ok(())
    }

    fn kernel_dims(&self, feature_hw: (usize, usize)) -> (usize, usize) {
        match self.extent {
            KernelExtent::Local(kh, kw) => (kh, kw),
            KernelExtent::FullMap => feature_hw,
        }
    }
}

/// Learnable state: head kernels `[kh, kw, d, K]` and the scalar gate `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftAttentionState {
    pub head_weights: ParamId,
    pub gamma: ParamId,
    pub config: SoftAttentionConfig,
}

impl SoftAttentionState {
    /// `feature_hw` only matters for [`KernelExtent::FullMap`].
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        depth: usize,
        feature_hw: (usize, usize),
        config: SoftAttentionConfig,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        let (kh, kw) = config.kernel_dims(feature_hw);
        let std = (1.0 / (kh * kw * depth) as f64).sqrt();
        let head_weights = store.add(format!("{name}.heads"), Tensor::randn(&[kh, kw, depth, config.k], rng, std)?);
        let gamma = store.add(format!("{name}.gamma"), Tensor::scalar(T::of(config.gamma_init)));
        Ok(Self { head_weights, gamma, config })
    }

    pub fn depth<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.value(self.head_weights).shape()[2]
    }
}

/// Tape nodes produced by [`sa_forward`].
#[derive(Clone, Copy, Debug)]
pub struct SoftAttentionOutput {
    /// `gamma * t * alpha`, shaped like `t`.
    pub f_sa: Var,
    /// Sum of the head maps, kept with a trailing unit axis: `[.., h, w, 1]`.
    pub alpha: Var,
    /// Per-head softmax maps `[.., h, w, K]`.
    pub head_maps: Var,
}

impl SoftAttentionOutput {
    /// `alpha` of batch entry `sample` as an `[h, w]` map.
    pub fn alpha_map<T: Scalar>(&self, tape: &Tape<T>, sample: usize) -> Result<Tensor<T>> {
        let a = tape.value(self.alpha);
        let (n, h, w, _) = nhwc(a.shape())?;
        if sample >= n {
            return Err(Error::Shape(format!("sample {sample} out of batch of {n}")));
        }
        Tensor::new(vec![h, w], a.data()[sample * h * w..(sample + 1) * h * w].to_vec())
    }
}

/// Attention maps and attended features for `t` (`[h,w,d]` or `[n,h,w,d]`).
pub fn sa_forward<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    state: &SoftAttentionState,
    t: Var,
) -> Result<SoftAttentionOutput> {
    let (_, _, _, d) = nhwc(tape.shape(t))?;
    let depth = state.depth(store);
    if d != depth {
        return Err(Error::Shape(format!("features have depth {d}, attention expects {depth}")));
    }
    if !tape.value(t).is_finite() {
        return Err(Error::Numeric("non-finite attention input".into()));
    }
    let w = tape.param(store, state.head_weights);
    let gamma = tape.param(store, state.gamma);
    let logits = tape.conv3d_heads(t, w)?;
    let head_maps = tape.softmax_spatial(logits)?;
    let last = tape.value(head_maps).rank() - 1;
    let alpha = tape.reduce_sum(head_maps, &[last], true)?;
    let weighted = tape.mul(t, alpha)?;
    let f_sa = tape.scale(weighted, gamma)?;
    Ok(SoftAttentionOutput { f_sa, alpha, head_maps })
}

/// Output of [`sa_integrate`].
#[derive(Clone, Copy, Debug)]
pub struct IntegratedOutput {
    pub output: Var,
    pub attention: SoftAttentionOutput,
}

/// `dropout(relu(concat(maxpool(main), maxpool(f_sa))))`, giving
/// `[h/2, w/2, d_main + d]` (floored).
pub fn sa_integrate<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    state: &SoftAttentionState,
    main: Var,
    t: Var,
    mode: Mode,
    rng: &mut SeededRng,
) -> Result<IntegratedOutput> {
    let (nm, hm, wm, _) = nhwc(tape.shape(main))?;
    let (nt, ht, wt, _) = nhwc(tape.shape(t))?;
    if (nm, hm, wm) != (nt, ht, wt) || tape.shape(main).len() != tape.shape(t).len() {
        return Err(Error::Shape(format!(
            "main branch {:?} and attention input {:?} differ spatially",
            tape.shape(main),
            tape.shape(t)
        )));
    }
    let attention = sa_forward(tape, store, state, t)?;
    let pooled_main = tape.maxpool2d(main)?;
    let pooled_sa = tape.maxpool2d(attention.f_sa)?;
    let joined = tape.concat_channels(pooled_main, pooled_sa)?;
    let activated = tape.relu(joined);
    let output = DropoutLayer::new(state.config.dropout)?.forward(tape, activated, mode, rng)?;
    Ok(IntegratedOutput { output, attention })
}

/// Bilinear upsampling of an `[h, w]` attention map to `(H, W)`, rescaled so
/// the total mass is unchanged.
pub fn upsample_alpha<T: Scalar>(alpha: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    let &[h, w] = alpha.shape() else {
        return Err(Error::Shape(format!("alpha must be [h,w], got {:?}", alpha.shape())));
    };
    let (th, tw) = target;
    if th < h || tw < w {
        return Err(Error::Parameter(format!("cannot upsample {h}x{w} to smaller {th}x{tw}")));
    }
    let up = resize_bilinear(&alpha.reshape(&[h, w, 1])?, target)?;
    let mass = alpha.sum();
    let up_mass = up.sum();
    let up = if up_mass != T::zero() { up.map(|v| v * mass / up_mass) } else { up };
    up.reshape(&[th, tw])
}
