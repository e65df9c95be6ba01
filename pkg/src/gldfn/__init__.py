"""Blind super-resolution with global and local dynamic filtering.

The package is self-contained: a small 4-D tensor engine with reverse-
mode autodiff, the two dynamic filtering operators, the degradation
pipeline, PSNR/SSIM metrics, and a training/evaluation CLI.
"""

from .degradation import (
    BlurKernel,
    DegradationSpec,
    RegionBlurMap,
    add_awgn,
    blur,
    degrade,
    gaussian8_kernels,
    make_anisotropic_gaussian,
    make_isotropic_gaussian,
    s_fold_downsample,
    spatially_varying_degrade,
)
from .dynfilters import (
    GlobalDynFilterParams,
    LocalDynFilterParams,
    attention_weights,
    global_dyn_conv,
    local_dyn_conv,
    local_dyn_conv_reference,
    mac_count,
    predict_local_filters,
)
from .gradcheck import grad_check
from .metrics import EvalReport, psnr, rgb_to_y, ssim
from .network import (
    NetworkConfig,
    WeightStore,
    config_from_store,
    gldfn_forward,
    init_weights,
    l1_loss,
    parameter_count,
    zero_weights,
)
from .tensor import ShapeError, Tape, Tensor, backward
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"
