"""Gaussian mixture reduction with KLD, ISE and NISE dissimilarities."""
from .core import (
    DimensionMismatchError,
    Gaussian,
    GaussianMixture,
    MixtureError,
    SubMixture,
    eval_pdf,
    load_mixture,
    pooled_moments,
    save_mixture,
    validate,
)
from .descent import DescentConfig, gradient_descent
from .dissim import (
    KLDEstimate,
    LikenessMatrices,
    Measure,
    MixtureGradient,
    QuadratureConfig,
    gaussian_product_integral,
    ise,
    ise_gradient,
    kld_gaussians,
    kld_gm_numeric,
    likeness,
    nise,
    nise_gradient,
)
from .greedy import (
    KLD_BARYCENTER,
    CostBased,
    KSmallest,
    MassBudget,
    Merge,
    MergeMethod,
    Prune,
    ReductionTrace,
    TargetError,
    Threshold,
    merge_pair,
    prune,
    runnalls_reduce,
    select_action_global,
    select_merge_local,
    williams_reduce,
)
from .merge import BsgaResult, barycenter, bsga, kld_barycenter, pairwise_barycenter_objective, runnalls_bound
from .refine import RefineResult, refine

__version__ = "0.1.0"
