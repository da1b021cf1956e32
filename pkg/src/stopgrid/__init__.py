"""Optimal multi-investment boundaries under incomplete information with learning from the past."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    InstabilityError,
    InvalidParameterError,
    MultipleSignChangeError,
    NoSignChangeError,
    NumericalError,
    SingularSystemError,
)
from .model import G, G_prime, DerivedParams, ModelParams, b1_closed_form, derive_params, v1_eval  # noqa: E402
from .pde import (  # noqa: E402
    GridFunction,
    PdeConfig,
    PiGrid,
    diffuse_expectation,
    second_moment_check,
    solve_tridiagonal,
)  # noqa: E402
from .solver import (  # noqa: E402
    LevelResult,
    SolveResult,
    build_g,
    diagnostics,
    eval_h,
    find_boundary,
    paste_candidate,
    solve_sequence,
)
from .montecarlo import (  # noqa: E402
    Estimate,
    McConfig,
    StrategyOutcome,
    compare_strategies,
    estimate_f,
    estimate_single_stop,
    simulate_full_strategy,
    step_belief,
)
