//! Model definitions: the VT-CNN2 classifier and the PA surrogate.

use crate::nn::{LayerSpec, Network, NnError, Padding};

/// Layer index of the classifier's last hidden rectifier output (the
/// dense-256 activation used by the activation-clustering defense).
pub const VT_CNN2_LAST_HIDDEN_LAYER: usize = 8;

/// Two-conv-plus-dense classifier over `1 x 2 x T` I/Q tensors.
pub fn vt_cnn2(n_classes: usize, frame_len: usize, seed: u64) -> Result<Network<f32>, NnError> {
    Network::new(
        1,
        2,
        frame_len,
        vec![
            LayerSpec::Conv2d {
                filters: 256,
                kernel_h: 1,
                kernel_w: 3,
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.6 },
            LayerSpec::Conv2d {
                filters: 80,
                kernel_h: 2,
                kernel_w: 3,
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.6 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 256 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.6 },
            LayerSpec::Dense { units: n_classes },
        ],
        seed,
    )
}

/// Sample-wise PA regression network: 2 I/Q channels in, 2 out, built from
/// width-1 kernels only so every output sample depends on exactly its input
/// sample. It predicts the clipping residual, which the surrogate wrapper
/// adds back onto the input.
pub fn pa_surrogate_net(frame_len: usize, seed: u64) -> Result<Network<f32>, NnError> {
    Network::new(
        2,
        1,
        frame_len,
        vec![
            LayerSpec::Conv2d {
                filters: 96,
                kernel_h: 1,
                kernel_w: 1,
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                filters: 96,
                kernel_h: 1,
                kernel_w: 1,
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                filters: 96,
                kernel_h: 1,
                kernel_w: 1,
                padding: Padding::Valid,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                filters: 2,
                kernel_h: 1,
                kernel_w: 1,
                padding: Padding::Valid,
            },
        ],
        seed,
    )
}
