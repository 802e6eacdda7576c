"""Riemannian preconditioned tensor completion in Tucker form.

Batch (nonlinear conjugate gradient, gradient descent) and online
(stochastic gradient descent) solvers for recovering a 3-order tensor of
fixed multilinear rank from a sparse sample of its entries, together with
the quotient-geometry machinery they run on.
"""

from .geometry import (
    AmbientVector,
    Geometry,
    RotationTuple,
    TangentVector,
    TuckerPoint,
    random_point,
    rotate_point,
    rotate_tangent,
    vertical_vector,
)
from .harness import SyntheticSpec, generate_instance, ground_truth_point, manifold_dim, split
from .kernels import BACKEND as KERNEL_BACKEND
from .linalg import (
    SkewTriple,
    SpdGram,
    coupled_lyap_pcg,
    lyap_spd,
    pcg_linear,
    polar_factor,
    skew,
    sym,
)
from .problem import (
    CompletionInstance,
    ResidualTensor,
    cost,
    mse,
    residual,
    riemannian_grad,
    scaled_egrad,
    slice_gradient,
    step_size_guess,
)
from .solvers import (
    SgdConfig,
    SolverConfig,
    SolverTrace,
    conjugate_gradient,
    gradient_descent,
    pretrain_gamma0,
    sgd,
)
from .tensors import (
    DenseTensor3,
    MultilinearRank,
    SparseTensor3,
    fold,
    mode_product,
    tucker_eval_sparse,
    unfold,
)

__version__ = "0.1.0"
