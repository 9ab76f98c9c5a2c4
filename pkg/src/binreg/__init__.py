"""Binned probabilistic regression with Wasserstein-style losses.

Scalar regression targets are discretized into bins; models predict a
probability histogram per target.  The package provides the bin encodings,
plain and hinged Wasserstein training losses with analytical gradients,
uncertainty metrics (AUSE, multimodal CRPS, entropy and friends), a
synthetic line dataset with controllable ambiguity, a small from-scratch
trainer, and a CLI harness that reproduces the loss ablation trends.
"""

from .binning import (
    BinGrid,
    DiracMixture,
    Histogram,
    build_neighborhood_mixture,
    decode_argmax,
    encode_mixture,
    gaussian_smooth,
    make_linear_grid,
    make_quantile_grid,
    softmax_head,
    softplus_head,
)
from .losses import (
    GradAnalysis,
    HingeConfig,
    hinge_renormalize,
    hinge_w1,
    loss_grad,
    nll,
    softmax_w1_grad_analysis,
    w1_cdf,
    w1_dirac,
)
from .metrics import (
    EvalRecord,
    SparsificationResult,
    auc_cumulative_error,
    crps_mixture,
    entropy,
    horizon_error,
    inv_max,
    kde,
    sparsification,
    variance,
)
from .net import (
    NetworkModel,
    NetworkSpec,
    forward,
    init_model,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
)
from .synth import (
    DatasetConfig,
    LineParams,
    SynthSample,
    generate_dataset,
    load_dataset,
    render,
    sample_line,
)
from .training import TrainConfig, train

__version__ = "0.1.0"
