"""Fréchet means on manifolds with known cut loci and numerical checks of
their central limit theorem, including the cut-locus correction term."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import (  # noqa: F401
    Circle,
    CutStructure,
    ManifoldPoint,
    ProjectivePlane,
    ProjectiveSpace,
    Sphere,
    TangentVector,
    Torus,
    cut_structure,
    cut_time,
    distance,
    exp_map,
    kind_from_name,
    log_map,
    parallel_transport,
)
from .measures import (  # noqa: F401
    SHIPPED_MODELS,
    SampleSet,
    cut_density_trace,
    density_eval,
    model_from_config,
    sample,
    shipped_model,
)
from .frechet import (  # noqa: F401
    FrechetObjective,
    FrechetSolveResult,
    SolverOptions,
    consistency_probe,
    frechet_gradient_field,
    frechet_mean,
    frechet_value,
)
from .asymptotics import (  # noqa: F401
    CltPrediction,
    clt_covariance,
    hessian_tensor_numeric,
    hessian_tensor_point,
    j_mu_quadrature,
    linearization_residual,
    psi_mu,
    transport_expansion_check,
    v0,
)
from .experiments import (  # noqa: F401
    ExperimentConfig,
    ExperimentReport,
    load_report,
    persist_report,
    residual_decay_suite,
    run_clt_experiment,
    vol_A_delta_probe,
)
