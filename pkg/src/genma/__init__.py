"""Generalised complex Monge-Ampere equations on flat tori.

The package is layered: pointwise (p,p)-form algebra (:mod:`genma.forms`),
spectral fields on the torus (:mod:`genma.torus`), the operator and its
linearisation (:mod:`genma.core`), the continuity solver
(:mod:`genma.continuity`) and two geometric front ends
(:mod:`genma.chern_weil`, :mod:`genma.slag`).
"""
from .chern_weil import ChernData, build_alphas, chern_problem, chern_residual_direct, equivalence_check
from .continuity import (
    ContinuityTrace,
    SolverConfig,
    continuity_run,
    convergence_ratio,
    newton_solve,
    uniqueness_check,
)
from .core import (
    GmaProblem,
    admissibility_check,
    constant_problem,
    linearized_apply,
    normalization_constants,
    residual,
)
from .errors import AdmissibilityError, GmaError, InvalidProblem, NewtonFailure, PathFailure
from .forms import (
    EllipticityParams,
    PPForm,
    cone_operator,
    contraction_matrix,
    ellipticity_bound,
    is_positive,
    relative_eigenvalues,
    solve_lambda1,
    top_ratio,
    wedge,
)
from .slag import ExampleParams, SlagData, build_slag_problem, compute_theta_hat, example_tangent
from .torus import FormField, ScalarField, TorusGrid, integrate, spectral_ddbar, zero_average_project

__version__ = "0.1.0"
