//! Cat-Conv fusion: concatenate shared feature maps along the channel axis,
//! then fuse with a single stride-1, padding-1 convolution. Spatial
//! resolution is preserved; only channel information is mixed.

use ndarray::{s, Array3};

use crate::error::{Error, Result};
use crate::nn::ConvParams;

use super::FeatureMap;

fn concat_features(features: &[FeatureMap]) -> Result<(Array3<f64>, usize)> {
    let first = features
        .first()
        .ok_or_else(|| Error::shape("cat_conv", "no feature maps given"))?;
    let (c, h, w) = first.dim();
    for (i, feat) in features.iter().enumerate() {
        if feat.dim() != (c, h, w) {
            return Err(Error::shape(
                "cat_conv",
                format!(
                    "feature {i} has shape {:?}, expected {:?}",
                    feat.dim(),
                    (c, h, w)
                ),
            ));
        }
    }
    let mut stacked = Array3::<f64>::zeros((c * features.len(), h, w));
    for (i, feat) in features.iter().enumerate() {
        stacked
            .slice_mut(s![i * c..(i + 1) * c, .., ..])
            .assign(feat);
    }
    Ok((stacked, c))
}

/// Fuse M shared features of shape `(C, H, W)` into one `(C_out, H, W)` map.
pub fn cat_conv_forward(features: &[FeatureMap], params: &ConvParams) -> Result<FeatureMap> {
    let (stacked, c) = concat_features(features)?;
    if params.in_channels() != c * features.len() {
        return Err(Error::shape(
            "cat_conv",
            format!(
                "kernel expects {} input channels, got {}",
                params.in_channels(),
                c * features.len()
            ),
        ));
    }
    if params.stride != 1 {
        return Err(Error::Config("cat_conv kernel must be stride 1".into()));
    }
    Ok(params.forward(&stacked))
}

/// Input and parameter gradients of [`cat_conv_forward`]. Returns one input
/// gradient per feature map; parameter gradients accumulate into `grads`.
pub fn cat_conv_backward(
    features: &[FeatureMap],
    params: &ConvParams,
    gy: &FeatureMap,
    grads: &mut ConvParams,
) -> Result<Vec<FeatureMap>> {
    let (stacked, c) = concat_features(features)?;
    let gx = params.backward(&stacked, gy, grads);
    Ok((0..features.len())
        .map(|i| gx.slice(s![i * c..(i + 1) * c, .., ..]).to_owned())
        .collect())
}
