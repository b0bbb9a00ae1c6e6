"""Dynamic risk measures on scenario trees: acceptance-set envelopes, g-expectations
and the checks that tie them together."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ComparisonWarning,
    DegenerateAnchorError,
    InputError,
    NumericError,
    RiskEnvError,
    TreeSizeError,
)
from .space import (  # noqa: F401
    MeasureChange,
    ScenarioTree,
    build_binomial,
    build_tree,
    cond_ess_extrema,
    cond_expect,
    lift,
)
